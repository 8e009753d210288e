#include <algorithm>
#include <atomic>
#include <thread>
#include <utility>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "grit/judge.hpp"

namespace grit {
namespace {

struct ParsedUrl {
  std::string scheme_host_port;
  std::string path;
};

ParsedUrl split_url(const std::string& url) {
  const std::size_t scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw std::invalid_argument("judge URL needs an http:// or https:// scheme: " + url);
  }
  const std::string scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") {
    throw std::invalid_argument("unsupported judge URL scheme: " + scheme);
  }
  const std::size_t path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

// RAII slot in an InflightLimiter.
class InflightSlot {
 public:
  explicit InflightSlot(InflightLimiter& limiter) : limiter_(limiter) {
    limiter_.acquire();
  }
  ~InflightSlot() { limiter_.release(); }
  InflightSlot(const InflightSlot&) = delete;
  InflightSlot& operator=(const InflightSlot&) = delete;

 private:
  InflightLimiter& limiter_;
};

}  // namespace

struct RemoteJudgeClient::Impl {
  RemoteJudgeConfig config;
  ParsedUrl url;
  std::atomic<std::size_t> calls{0};
};

RemoteJudgeClient::RemoteJudgeClient(RemoteJudgeConfig config)
    : impl_(std::make_unique<Impl>()) {
  if (!config.limiter) config.limiter = InflightLimiter::global();
  impl_->url = split_url(config.url);
  impl_->config = std::move(config);
}

RemoteJudgeClient::~RemoteJudgeClient() = default;

std::size_t RemoteJudgeClient::calls_made() const { return impl_->calls.load(); }

std::string RemoteJudgeClient::post_once(const JudgeRequest& request) {
  nlohmann::json body;
  body["prompt"] = request.prompt;
  body["images"] = nlohmann::json::array();
  for (const auto& image : request.images) {
    body["images"].push_back(base64_encode(image));
  }

  httplib::Client client(impl_->url.scheme_host_port);
  const auto seconds = std::chrono::duration_cast<std::chrono::seconds>(request.timeout);
  const auto micros = std::chrono::duration_cast<std::chrono::microseconds>(
      request.timeout - seconds);
  client.set_connection_timeout(seconds.count(), micros.count());
  client.set_read_timeout(seconds.count(), micros.count());
  client.set_write_timeout(seconds.count(), micros.count());

  httplib::Headers headers;
  if (!impl_->config.api_key.empty()) {
    headers.emplace("Authorization", "Bearer " + impl_->config.api_key);
  }

  InflightSlot slot(*impl_->config.limiter);
  ++impl_->calls;
  const auto result =
      client.Post(impl_->url.path, headers, body.dump(), "application/json");
  if (!result) {
    throw TransportError("judge request failed: " + httplib::to_string(result.error()));
  }
  if (result->status == 401 || result->status == 403) {
    throw AuthError("judge endpoint rejected the credential (HTTP " +
                    std::to_string(result->status) + ")");
  }
  if (result->status < 200 || result->status >= 300) {
    throw TransportError("judge endpoint returned HTTP " + std::to_string(result->status));
  }
  return result->body;
}

template <typename Parse>
auto RemoteJudgeClient::with_retries(const JudgeRequest& request, Parse&& parse) {
  request.validate();
  std::chrono::milliseconds backoff = impl_->config.initial_backoff;
  for (int attempt = 0;; ++attempt) {
    const bool last = attempt >= request.max_retries;
    try {
      return parse(post_once(request));
    } catch (const AuthError&) {
      throw;
    } catch (const JudgeError&) {
      if (last) throw;
    }
    std::this_thread::sleep_for(backoff);
    backoff *= 2;
  }
}

JudgeVerdict RemoteJudgeClient::judge(const JudgeRequest& request) {
  return with_retries(request, [](std::string body) {
    const auto score = find_score(body);
    if (!score) throw ParseError("no {\"score\": n} object in judge response");
    return JudgeVerdict{std::clamp(*score, 0.0, 1.0), std::move(body)};
  });
}

int RemoteJudgeClient::choose_image(const JudgeRequest& request) {
  return with_retries(request, [](const std::string& body) {
    return parse_binary_choice(body);
  });
}

}  // namespace grit
