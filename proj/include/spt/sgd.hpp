// Copyright 2026 The steplab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#pragma once

#include <span>
#include <vector>

#include "spt/autodiff.hpp"

namespace spt {

/// SGD with heavy-ball momentum and L2 weight decay folded into the gradient:
///   v <- momentum * v + grad + weight_decay * param
///   param <- param - lr * v
/// One state per parameter group; velocity buffers are bound to the
/// parameter order of the first update.
struct SGDState {
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-3;
  std::vector<Tensor> velocity;
};

/// Applies one update to every trainable parameter in `params` using its
/// accumulated grad. Frozen parameters are skipped.
void sgd_update(SGDState& state, std::span<ad::Parameter* const> params);

}  // namespace spt
