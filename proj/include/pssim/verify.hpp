#pragma once

#include "pssim/engine.hpp"
#include "pssim/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace pssim {

// Verification replays an asynchronous ordered-momentum run against three
// auxiliary sequences (u_hat, w_hat, y_hat) that consume the recorded
// gradients in parameter-iteration order (index 0 first, one gradient per
// worker, then 1, 2, ...) instead of delivery order, and checks the
// identities that relate them to the live server state:
//
//   identity 1:  u_hat_t - u_t equals the weighted sum of the gradients
//                still in flight at iteration t-1;
//   identity 2:  w_hat_t - w_t equals the compensated version of the same;
//   identity 3:  y_hat_t = (w_hat_t - beta * w_hat_{t-K}) / (1 - beta)
//                at bucket boundaries (K divides t-1, t > 1);
//   identity 4:  ||y_hat_t - w_hat_t||^2 <= 4 eta^2 K^2 G2_hat / (1-beta)^4
//                with G2_hat the largest observed squared gradient norm.

/// Auxiliary sequences at index time t (valid from t = 1).
struct AuxState {
  Vec u_hat;
  Vec w_hat;
  Vec y_hat;
  std::int64_t t = 0;
};

/// State at t = 1 from the K initial gradients (parameter index 0, one per
/// worker; any order, the sum is what matters).
AuxState init_aux(const Vec& w0, const std::vector<Vec>& initial_grads, double eta, double beta);

/// Advances t -> t+1 by consuming the gradient of parameter index `index`.
/// The bucket-boundary branch (K divides t-1) scales the momentum by beta.
/// Throws VerifyError unless index == state.t (indices must be consumed in
/// order, exactly once).
void advance_aux(AuxState& state, const Vec& grad, std::int64_t index, double eta, double beta, int K);

struct ResidualReport {
  std::string name;
  double tolerance = 1e-9;
  std::int64_t evaluated = 0;  // aux times the identity was checked at
  std::int64_t skipped = 0;    // aux times where it does not apply (identity 3)
  /// The run ended with gradients still in flight, so the aux replay stops
  /// early. A notice about coverage, not a failure.
  bool truncated = false;
  std::int64_t first_missing_index = -1;
  double max_abs = 0.0;  // identities 1-3: worst |lhs - rhs|; 4: worst ||y-w||^2
  double max_rel = 0.0;  // identities 1-3: worst |lhs-rhs|/(1+|lhs|); 4: worst value/bound
  std::int64_t argmax_t = -1;
  bool pass = true;
  std::string note;
};

struct VerificationReport {
  ResidualReport identity1, identity2, identity3, identity4;
  std::int64_t aux_reached = 0;  // last aux time evaluated
};

/// Runs all four identity checks over one recorded run. Requires an
/// asynchronous-scheduler record of a rule with a server momentum (the
/// ordered-momentum rule), produced with a constant learning rate.
VerificationReport verify_run(const RunRecord& rec);

ResidualReport check_identity1(const RunRecord& rec);
ResidualReport check_identity2(const RunRecord& rec);
ResidualReport check_identity3(const RunRecord& rec);
ResidualReport check_identity4(const RunRecord& rec);

/// One line per identity, e.g. "identity 1  pass  evaluated=499 ...".
std::string format_report(const VerificationReport& rep);

}  // namespace pssim
