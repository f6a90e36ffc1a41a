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


#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace saesteer {

// Eigenvalues of a symmetric n x n matrix (row-major; only the lower triangle
// is read), ascending. Householder reduction to tridiagonal form followed by
// implicit-shift QL. Throws NumericError if QL fails to converge.
std::vector<double> symmetric_eigenvalues(std::span<const double> matrix, std::size_t n);

}  // namespace saesteer
