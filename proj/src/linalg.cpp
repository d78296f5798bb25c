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

#include "nvreadout/linalg.hpp"

#include <cmath>

namespace nvreadout {

Eigensystem hermitian_eigensystem(const ComplexMatrix& h) {
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> solver(h);
  Eigensystem es{solver.eigenvalues(), solver.eigenvectors()};
  for (Eigen::Index c = 0; c < es.vectors.cols(); ++c) {
    auto col = es.vectors.col(c);
    const double scale = col.cwiseAbs().maxCoeff();
    for (Eigen::Index r = 0; r < col.size(); ++r) {
      if (std::abs(col(r)) > 1e-9 * scale) {
        const Complex phase = std::conj(col(r)) / std::abs(col(r));
        col *= phase;
        col(r) = Complex(col(r).real(), 0.0);
        break;
      }
    }
  }
  return es;
}

double hermiticity_defect(const ComplexMatrix& h) { return (h - h.adjoint()).cwiseAbs().maxCoeff(); }

ComplexMatrix kron(const ComplexMatrix& a, const ComplexMatrix& b) {
  ComplexMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

const SpinOneOperators& spin_one() {
  static const SpinOneOperators ops = [] {
    SpinOneOperators s;
    const double r2 = std::sqrt(2.0);
    s.plus = ComplexMatrix::Zero(3, 3);
    // S+ |m> = sqrt(2 - m(m+1)) |m+1>, basis index = m + 1.
    s.plus(1, 0) = r2;
    s.plus(2, 1) = r2;
    s.minus = s.plus.adjoint();
    s.x = 0.5 * (s.plus + s.minus);
    s.y = Complex(0.0, -0.5) * (s.plus - s.minus);
    s.z = ComplexMatrix::Zero(3, 3);
    s.z(0, 0) = -1.0;
    s.z(2, 2) = 1.0;
    s.identity = ComplexMatrix::Identity(3, 3);
    return s;
  }();
  return ops;
}

}  // namespace nvreadout
