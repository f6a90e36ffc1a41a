// Copyright 2026 The saesteer Authors
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


#include "saesteer/symmetric_eigen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "saesteer/error.hpp"

namespace saesteer {
namespace {

// Reduces `a` to tridiagonal form; diag receives the diagonal, off[i] the
// (i, i-1) sub-diagonal element (off[0] = 0).
void householder_tridiagonalize(std::vector<double>& a, std::size_t n, std::vector<double>& diag,
                                std::vector<double>& off) {
  auto at = [&](std::size_t r, std::size_t c) -> double& { return a[r * n + c]; };
  for (std::size_t i = n - 1; i > 0; --i) {
    const std::size_t l = i - 1;
    double h = 0.0;
    if (l > 0) {
      double scale = 0.0;
      for (std::size_t k = 0; k <= l; ++k) scale += std::abs(at(i, k));
      if (scale == 0.0) {
        off[i] = at(i, l);
      } else {
        for (std::size_t k = 0; k <= l; ++k) {
          at(i, k) /= scale;
          h += at(i, k) * at(i, k);
        }
        double f = at(i, l);
        const double g = f >= 0.0 ? -std::sqrt(h) : std::sqrt(h);
        off[i] = scale * g;
        h -= f * g;
        at(i, l) = f - g;
        f = 0.0;
        for (std::size_t j = 0; j <= l; ++j) {
          double s = 0.0;
          for (std::size_t k = 0; k <= j; ++k) s += at(j, k) * at(i, k);
          for (std::size_t k = j + 1; k <= l; ++k) s += at(k, j) * at(i, k);
          off[j] = s / h;
          f += off[j] * at(i, j);
        }
        const double hh = f / (h + h);
        for (std::size_t j = 0; j <= l; ++j) {
          const double fj = at(i, j);
          const double gj = off[j] - hh * fj;
          off[j] = gj;
          for (std::size_t k = 0; k <= j; ++k) at(j, k) -= fj * off[k] + gj * at(i, k);
        }
      }
    } else {
      off[i] = at(i, l);
    }
  }
  off[0] = 0.0;
  for (std::size_t i = 0; i < n; ++i) diag[i] = at(i, i);
}

// Implicit QL with Wilkinson-style shifts on a symmetric tridiagonal matrix.
// sub[i] is the (i+1, i) element; overwritten.
void tridiagonal_ql(std::vector<double>& d, std::vector<double>& sub) {
  const std::size_t n = d.size();
  constexpr int kMaxIterations = 60;
  const double eps = std::numeric_limits<double>::epsilon();
  for (std::size_t l = 0; l < n; ++l) {
    int iter = 0;
    std::size_t m;
    do {
      for (m = l; m + 1 < n; ++m) {
        const double dd = std::abs(d[m]) + std::abs(d[m + 1]);
        if (std::abs(sub[m]) <= eps * dd) break;
      }
      if (m != l) {
        if (iter++ == kMaxIterations) {
          throw NumericError("symmetric eigen-solver did not converge (eigenvalue " +
                             std::to_string(l) + ")");
        }
        double g = (d[l + 1] - d[l]) / (2.0 * sub[l]);
        double r = std::hypot(g, 1.0);
        g = d[m] - d[l] + sub[l] / (g + std::copysign(r, g));
        double s = 1.0, c = 1.0, p = 0.0;
        bool underflow = false;
        for (std::size_t i = m; i-- > l;) {
          const double f = s * sub[i];
          const double b = c * sub[i];
          r = std::hypot(f, g);
          sub[i + 1] = r;
          if (r == 0.0) {
            d[i + 1] -= p;
            sub[m] = 0.0;
            underflow = true;
            break;
          }
          s = f / r;
          c = g / r;
          g = d[i + 1] - p;
          r = (d[i] - g) * s + 2.0 * c * b;
          p = s * r;
          d[i + 1] = g + p;
          g = c * r - b;
        }
        if (underflow) continue;
        d[l] -= p;
        sub[l] = g;
        sub[m] = 0.0;
      }
    } while (m != l);
  }
}

}  // namespace

std::vector<double> symmetric_eigenvalues(std::span<const double> matrix, std::size_t n) {
  if (matrix.size() != n * n) throw ValidationError("eigen-solver input is not n x n");
  if (n == 0) return {};
  std::vector<double> a(matrix.begin(), matrix.end());
  for (double v : a) {
    if (!std::isfinite(v)) throw NumericError("eigen-solver input contains NaN or Inf");
  }
  std::vector<double> diag(n), off(n);
  householder_tridiagonalize(a, n, diag, off);
  std::vector<double> sub(n, 0.0);
  for (std::size_t i = 1; i < n; ++i) sub[i - 1] = off[i];
  tridiagonal_ql(diag, sub);
  std::sort(diag.begin(), diag.end());
  return diag;
}

}  // namespace saesteer
