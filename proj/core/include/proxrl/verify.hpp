#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "proxrl/tabular.hpp"

namespace proxrl {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Operator properties: projection vs an exhaustive oracle, firm
/// nonexpansiveness, prox limits, penalty gradient vs finite differences.
std::vector<CheckResult> run_props_suite(std::uint64_t seed = 2024);

/// Dynamic-programming properties: contraction of the plain and constrained
/// backups, fixed-point uniqueness and bounds, penalty continuation.
std::vector<CheckResult> run_oracle_suite(std::uint64_t seed = 2024);

/// Differentiation properties: vjp/jvp consistency and finite differences,
/// spectral-norm accuracy, conjugate gradients, implicit gradients.
std::vector<CheckResult> run_grad_suite(std::uint64_t seed = 2024);

/// Prints "[PASS]/[FAIL] name: detail" per check; returns the failure count.
int report_checks(const std::vector<CheckResult>& checks);

// Independent reference implementations, shared with the test suites.
namespace oracle {

/// Isotonic projection by exhaustive search over consecutive-block partitions.
Eigen::VectorXd isotonic_qp(const Eigen::Ref<const Eigen::VectorXd>& q);

/// Random dense MDP with row-stochastic transitions and rewards in [-1, 1].
DiscreteMdp random_mdp(int n_states, int n_actions, double gamma, std::uint64_t seed);

}  // namespace oracle

}  // namespace proxrl
