#include "grit/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace grit {
namespace {

void log_softmax_into(std::span<const double> logits, std::span<double> out) {
  const double peak = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (const double l : logits) sum += std::exp(l - peak);
  const double log_norm = peak + std::log(sum);
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - log_norm;
}

void check_same_shape(const TabularPolicy& a, const TabularPolicy& b,
                      const char* what) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(what) + ": policy tables differ in shape");
  }
}

}  // namespace

TabularPolicy::TabularPolicy(std::size_t state_count, std::size_t vocab_size,
                             double initial_logit)
    : state_count_(state_count),
      vocab_size_(vocab_size),
      logits_(state_count * vocab_size, initial_logit) {
  if (state_count == 0 || vocab_size == 0) {
    throw ShapeError("policy needs at least one state and one token");
  }
}

void TabularPolicy::check(StateId s, TokenId t) const {
  if (s >= state_count_) throw std::out_of_range("state index out of range");
  if (t >= vocab_size_) throw std::out_of_range("token index out of range");
}

double TabularPolicy::logit(StateId s, TokenId t) const {
  check(s, t);
  return logits_[s * vocab_size_ + t];
}

double& TabularPolicy::logit(StateId s, TokenId t) {
  check(s, t);
  return logits_[s * vocab_size_ + t];
}

std::span<const double> TabularPolicy::row(StateId s) const {
  check(s, 0);
  return {logits_.data() + s * vocab_size_, vocab_size_};
}

std::span<double> TabularPolicy::row(StateId s) {
  check(s, 0);
  return {logits_.data() + s * vocab_size_, vocab_size_};
}

std::vector<double> TabularPolicy::log_probabilities(StateId s) const {
  std::vector<double> out(vocab_size_);
  log_softmax_into(row(s), out);
  return out;
}

std::vector<double> TabularPolicy::probabilities(StateId s) const {
  std::vector<double> out = log_probabilities(s);
  for (double& v : out) v = std::exp(v);
  return out;
}

void CompletionGroup::validate() const {
  if (completions.size() < 2) {
    throw std::invalid_argument("a completion group needs at least two completions");
  }
  if (rewards.size() != completions.size() ||
      advantages.size() != completions.size()) {
    throw std::invalid_argument("rewards/advantages must match the group size");
  }
  for (const auto& c : completions) {
    if (c.tokens.size() != c.states.size()) {
      throw std::invalid_argument("completion tokens and states differ in length");
    }
  }
}

void GrpoConfig::validate() const {
  if (!(epsilon > 0.0 && epsilon < 1.0)) {
    throw std::invalid_argument("epsilon must lie in (0, 1)");
  }
  if (!(beta >= 0.0)) throw std::invalid_argument("beta must be >= 0");
  if (!(delta > 0.0)) throw std::invalid_argument("delta must be > 0");
  if (group_size < 2) throw std::invalid_argument("group_size must be >= 2");
}

std::vector<double> group_advantages(std::span<const double> rewards,
                                     double delta, StdKind kind) {
  const std::size_t n = rewards.size();
  if (n < 2) {
    throw std::invalid_argument("group advantages need at least two rewards");
  }
  const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
  double sq = 0.0;
  for (const double r : rewards) sq += (r - mean) * (r - mean);
  const double denom_n = kind == StdKind::kPopulation ? n : n - 1;
  const double std_dev = std::sqrt(sq / denom_n);

  std::vector<double> out(n, 0.0);
  if (std::all_of(rewards.begin(), rewards.end(),
                  [&](double r) { return r == rewards[0]; })) {
    return out;
  }
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = (rewards[i] - mean) / (std_dev + delta);
  }
  return out;
}

double sequence_logprob(const TabularPolicy& policy,
                        std::span<const TokenId> tokens,
                        std::span<const StateId> states) {
  if (tokens.size() != states.size()) {
    throw std::invalid_argument("token and state sequences differ in length");
  }
  std::vector<double> scratch(policy.vocab_size());
  double total = 0.0;
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    if (tokens[t] >= policy.vocab_size()) {
      throw std::out_of_range("token index out of range");
    }
    log_softmax_into(policy.row(states[t]), scratch);
    total += scratch[tokens[t]];
  }
  return total;
}

double clipped_surrogate(double ratio, double advantage, double epsilon) {
  const double clipped = std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon);
  return std::min(ratio * advantage, clipped * advantage);
}

double kl_categorical(const TabularPolicy& policy, const TabularPolicy& ref,
                      std::span<const StateId> visited) {
  check_same_shape(policy, ref, "kl_categorical");
  if (visited.empty()) return 0.0;
  double total = 0.0;
  for (const StateId s : visited) {
    const auto logp = policy.log_probabilities(s);
    const auto logq = ref.log_probabilities(s);
    double kl = 0.0;
    for (std::size_t v = 0; v < logp.size(); ++v) {
      kl += std::exp(logp[v]) * (logp[v] - logq[v]);
    }
    total += std::max(kl, 0.0);
  }
  return total / static_cast<double>(visited.size());
}

std::vector<StateId> visited_states(const CompletionGroup& group) {
  std::vector<StateId> out;
  for (const auto& c : group.completions) {
    out.insert(out.end(), c.states.begin(), c.states.end());
  }
  return out;
}

double grpo_objective(const CompletionGroup& group, const TabularPolicy& policy,
                      const TabularPolicy& old, const TabularPolicy& ref,
                      const GrpoConfig& config) {
  group.validate();
  check_same_shape(policy, old, "grpo_objective");
  check_same_shape(policy, ref, "grpo_objective");
  double surrogate = 0.0;
  for (std::size_t i = 0; i < group.size(); ++i) {
    const auto& c = group.completions[i];
    const double ratio = std::exp(sequence_logprob(policy, c.tokens, c.states) -
                                  sequence_logprob(old, c.tokens, c.states));
    surrogate += clipped_surrogate(ratio, group.advantages[i], config.epsilon);
  }
  surrogate /= static_cast<double>(group.size());
  const auto visited = visited_states(group);
  return surrogate - config.beta * kl_categorical(policy, ref, visited);
}

PolicyGradient grpo_gradient(const CompletionGroup& group,
                             const TabularPolicy& policy,
                             const TabularPolicy& old, const TabularPolicy& ref,
                             const GrpoConfig& config) {
  group.validate();
  check_same_shape(policy, old, "grpo_gradient");
  check_same_shape(policy, ref, "grpo_gradient");
  const std::size_t vocab = policy.vocab_size();
  PolicyGradient grad(policy.state_count(), vocab, 0.0);
  const double inv_n = 1.0 / static_cast<double>(group.size());

  // Surrogate: d/dθ [s_i A_i] = A_i s_i ∇log π(o_i) on the unclipped branch.
  for (std::size_t i = 0; i < group.size(); ++i) {
    const auto& c = group.completions[i];
    const double advantage = group.advantages[i];
    if (advantage == 0.0 || c.tokens.empty()) continue;
    const double ratio = std::exp(sequence_logprob(policy, c.tokens, c.states) -
                                  sequence_logprob(old, c.tokens, c.states));
    const double clipped =
        std::clamp(ratio, 1.0 - config.epsilon, 1.0 + config.epsilon);
    if (ratio * advantage > clipped * advantage) continue;
    const double weight = inv_n * advantage * ratio;
    for (std::size_t t = 0; t < c.tokens.size(); ++t) {
      const auto probs = policy.probabilities(c.states[t]);
      auto g = grad.row(c.states[t]);
      for (std::size_t v = 0; v < vocab; ++v) g[v] -= weight * probs[v];
      g[c.tokens[t]] += weight;
    }
  }

  // KL: d/dθ_w KL_s = p_w (log p_w - log q_w - KL_s), averaged over visits.
  const auto visited = visited_states(group);
  if (config.beta != 0.0 && !visited.empty()) {
    const double weight = config.beta / static_cast<double>(visited.size());
    for (const StateId s : visited) {
      const auto logp = policy.log_probabilities(s);
      const auto logq = ref.log_probabilities(s);
      double kl = 0.0;
      for (std::size_t v = 0; v < vocab; ++v) {
        kl += std::exp(logp[v]) * (logp[v] - logq[v]);
      }
      auto g = grad.row(s);
      for (std::size_t v = 0; v < vocab; ++v) {
        g[v] -= weight * std::exp(logp[v]) * (logp[v] - logq[v] - kl);
      }
    }
  }
  return grad;
}

TabularPolicy apply_update(const TabularPolicy& policy,
                           const PolicyGradient& gradient,
                           double learning_rate) {
  check_same_shape(policy, gradient, "apply_update");
  TabularPolicy out = policy;
  auto& logits = out.logits();
  const auto& g = gradient.logits();
  for (std::size_t i = 0; i < logits.size(); ++i) logits[i] += learning_rate * g[i];
  return out;
}

}  // namespace grit
