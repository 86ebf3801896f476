#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "proxrl/rng.hpp"
#include "proxrl/tabular.hpp"

namespace proxrl {

inline constexpr int kNumBids = 5;
inline constexpr double kBidFractions[kNumBids] = {0.0, 0.25, 0.5, 0.75, 1.0};

/// Auction context: query descriptor x ~ U[0,1], per-click cost c ~ U[0.2,0.4].
struct AuctionState {
  double x = 0.0;
  double c = 0.0;
  void validate() const;
};

struct Transition {
  AuctionState s;
  int a = 0;  // bid index into kBidFractions
  double r = 0.0;
  AuctionState s_next;

  double bid() const { return kBidFractions[a]; }
};

struct Dataset {
  std::vector<Transition> transitions;
  std::uint64_t seed = 0;
  std::string generator_version = "bidclick-1";

  std::int64_t size() const { return static_cast<std::int64_t>(transitions.size()); }
  void validate() const;
};

double logistic(double z);

/// P(click | s, bid) = logistic(2*bid + 0.5*x); strictly increasing in both.
double click_prob(const AuctionState& s, double bid);

AuctionState sample_state(Rng& rng);

/// Reward = Bernoulli(click_prob) - c * bid; the next state is drawn fresh
/// from the state distribution.
std::pair<double, AuctionState> env_step(const AuctionState& s, int action, Rng& rng);

/// Clip a raw bid draw to [0,1] and snap to the nearest grid fraction,
/// rounding ties up.
int snap_bid_index(double g);

/// Logging policy: bid draw ~ Normal(0.4, 0.4), clipped and snapped.
int behavior_action(Rng& rng);

/// Analytic probability that behavior_action returns each index.
Eigen::VectorXd behavior_action_probs();

Dataset generate_dataset(std::int64_t n, std::uint64_t seed);

/// One transition per line; the header line carries n, seed and generator
/// version. Floats use 17 significant digits so reads round-trip exactly.
void save_dataset_jsonl(const Dataset& data, const std::string& path);
Dataset load_dataset_jsonl(const std::string& path);

std::uint64_t fnv1a_file_hash(const std::string& path);

/// E[r | s, a] for each of the 5 bids.
Eigen::VectorXd expected_reward_row(const AuctionState& s);

/// One-step optimal value max_a E[r | s, a]; the regret oracle.
double optimal_value(const AuctionState& s);

using StateQFn = std::function<Eigen::VectorXd(const AuctionState&)>;

/// Number of adjacent action pairs with q[i] > q[i+1] + tol across the states.
long count_monotonicity_errors(const StateQFn& q_fn,
                               const std::vector<AuctionState>& eval_states, double tol);

/// Cartesian evaluation grid over [0,1] x [0.2,0.4], endpoints included.
std::vector<AuctionState> evaluation_grid(int nx = 50, int nc = 20);

std::vector<AuctionState> sample_states(int n, std::uint64_t seed);

Eigen::MatrixXd states_to_columns(const std::vector<AuctionState>& states);

/// Exact discretization for the dynamic-programming oracle: uniform grid of
/// nx x-points by nc c-points, expected rewards, and the fresh-state
/// transition kernel (uniform over grid states).
DiscreteMdp make_auction_mdp(int nx = 41, int nc = 21, double gamma = 0.9);

/// States of make_auction_mdp's grid, in state-index order.
std::vector<AuctionState> auction_mdp_states(int nx = 41, int nc = 21);

}  // namespace proxrl
