#pragma once

#include <functional>

#include "qpr/errors.hpp"
#include "qpr/qp_operator.hpp"

// Fourier-division solver for the homological equations of both conjugation
// stages, written once:
//
//     omega . d_phi X + [X, diag(dj)] = RHS
//
// Entrywise, with block(l) entry (row a = output mode j, col b = input mode
// j'), the divisor is  i (omega . l) + d_{j'} - d_j,  and
//
//     X_hat(l)_j^{j'} = RHS_hat(l)_j^{j'} / (i omega.l + d_{j'} - d_j).
//
// This is the orientation that makes the push-forward of Id + X (old variable
// = Phi(omega t) . new variable) cancel the solved part exactly; see the
// conjugation identities asserted in the tests.

namespace qpr {

struct HomologicalOutcome {
  QPOperator X;
  double min_divisor = std::numeric_limits<double>::infinity();
  double worst_margin = std::numeric_limits<double>::infinity();
  double residual_rel = 0.0;  // direct-substitution residual / m_norm(RHS)
};

// threshold(l_index, row, col) -> minimal admissible |divisor| for that entry.
// Solves every nonzero entry of rhs; throws `exit_kind` (diophantine or
// melnikov) identifying the offending tuple when a divisor falls below its
// threshold. Entries with rhs == 0 stay zero.
HomologicalOutcome solve_homological(
    const QPOperator& rhs, const Vec& diag, std::span<const double> omega,
    const std::function<double(int, int, int)>& threshold, FailKind exit_kind);

// [X, diag] computed entrywise (exact for diagonal right factors).
QPOperator commutator_with_diagonal(const QPOperator& X, const Vec& diag);

}  // namespace qpr
