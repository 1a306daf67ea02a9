// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "ltgen/core/matrix.hpp"

namespace ltgen {

struct SymEig {
  std::vector<double> values;  ///< descending
  Matrix vectors;              ///< column k pairs with values[k]
};

struct JacobiOptions {
  int max_sweeps = 100;
  /// Converged once the off-diagonal Frobenius norm falls below
  /// tolerance · max(1, ‖A‖_F).
  double tolerance = 1e-12;
  /// |a_ij - a_ji| allowed before the input is rejected, scaled by max(1, max|a|).
  double symmetry_tolerance = 1e-9;
};

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Throws ShapeError for non-square input, ContractError for non-symmetric
/// input and NumericError if the sweeps do not converge.
SymEig sym_eig(const Matrix& a, const JacobiOptions& options = {});

/// Principal square root of a symmetric PSD matrix. Eigenvalues down to
/// -1e-6 are clamped to zero; anything more negative raises NotPsdError.
Matrix sqrtm_psd(const Matrix& a);

}  // namespace ltgen
