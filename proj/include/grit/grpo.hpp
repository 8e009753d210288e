#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace grit {

using TokenId = std::size_t;
using StateId = std::size_t;

// Softmax policy over a (state, token) logit table. Snapshots of this type
// serve as the sampling policy and the reference policy.
class TabularPolicy {
 public:
  TabularPolicy() = default;
  TabularPolicy(std::size_t state_count, std::size_t vocab_size,
                double initial_logit = 0.0);

  std::size_t state_count() const { return state_count_; }
  std::size_t vocab_size() const { return vocab_size_; }

  double logit(StateId s, TokenId t) const;
  double& logit(StateId s, TokenId t);
  std::span<const double> row(StateId s) const;
  std::span<double> row(StateId s);

  std::vector<double> probabilities(StateId s) const;
  std::vector<double> log_probabilities(StateId s) const;

  const std::vector<double>& logits() const { return logits_; }
  std::vector<double>& logits() { return logits_; }

  bool same_shape(const TabularPolicy& other) const {
    return state_count_ == other.state_count_ &&
           vocab_size_ == other.vocab_size_;
  }

  friend bool operator==(const TabularPolicy&, const TabularPolicy&) = default;

 private:
  void check(StateId s, TokenId t) const;

  std::size_t state_count_ = 0;
  std::size_t vocab_size_ = 0;
  std::vector<double> logits_;
};

// Gradient tables share the policy's shape.
using PolicyGradient = TabularPolicy;

struct Completion {
  std::vector<TokenId> tokens;
  std::vector<StateId> states;  // state in which each token was emitted
};

struct CompletionGroup {
  std::string sample_id;
  std::vector<Completion> completions;
  std::vector<double> rewards;
  std::vector<double> advantages;
  double delta = 1e-8;

  std::size_t size() const { return completions.size(); }
  void validate() const;
};

enum class StdKind { kPopulation, kSample };

struct GrpoConfig {
  double epsilon = 0.2;
  double beta = 0.04;
  double delta = 1e-8;
  std::size_t group_size = 4;
  double learning_rate = 0.5;
  StdKind std_kind = StdKind::kPopulation;

  void validate() const;
};

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A_i = (r_i - mean) / (std + delta). Throws std::invalid_argument for fewer
// than two rewards.
std::vector<double> group_advantages(std::span<const double> rewards,
                                     double delta,
                                     StdKind kind = StdKind::kPopulation);

// Sum over steps of log softmax(logits[state])[token].
double sequence_logprob(const TabularPolicy& policy,
                        std::span<const TokenId> tokens,
                        std::span<const StateId> states);

double clipped_surrogate(double ratio, double advantage, double epsilon);

// Mean exact categorical KL(policy(.|s) || ref(.|s)) over the visited states,
// counted with multiplicity. Zero for an empty multiset.
double kl_categorical(const TabularPolicy& policy, const TabularPolicy& ref,
                      std::span<const StateId> visited_states);

// Every state the group's completions were emitted in, with multiplicity.
std::vector<StateId> visited_states(const CompletionGroup& group);

double grpo_objective(const CompletionGroup& group, const TabularPolicy& policy,
                      const TabularPolicy& old, const TabularPolicy& ref,
                      const GrpoConfig& config);

// Exact gradient of grpo_objective with respect to every logit of `policy`.
// A completion whose clipped branch is selected by the min contributes zero.
PolicyGradient grpo_gradient(const CompletionGroup& group,
                             const TabularPolicy& policy,
                             const TabularPolicy& old,
                             const TabularPolicy& ref,
                             const GrpoConfig& config);

// Gradient ascent: logits += learning_rate * gradient.
TabularPolicy apply_update(const TabularPolicy& policy,
                           const PolicyGradient& gradient,
                           double learning_rate);

}  // namespace grit
