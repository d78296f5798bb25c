// Copyright 2026 The nvreadout Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef NVREADOUT_LINALG_HPP
#define NVREADOUT_LINALG_HPP

#include <complex>

#include <Eigen/Dense>

namespace nvreadout {

using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;

/// Eigenpairs of a Hermitian matrix. Eigenvalues ascend; each eigenvector is
/// rotated so its first non-negligible component is real and positive.
struct Eigensystem {
  Eigen::VectorXd values;
  ComplexMatrix vectors;  // columns
};

Eigensystem hermitian_eigensystem(const ComplexMatrix& h);

/// Max-abs entry of H - H^dagger.
double hermiticity_defect(const ComplexMatrix& h);

/// Kronecker product a (x) b.
ComplexMatrix kron(const ComplexMatrix& a, const ComplexMatrix& b);

/// Spin-1 operators in the ascending basis (m = -1, 0, +1).
struct SpinOneOperators {
  ComplexMatrix x, y, z, plus, minus, identity;
};
const SpinOneOperators& spin_one();

}  // namespace nvreadout

#endif  // NVREADOUT_LINALG_HPP
