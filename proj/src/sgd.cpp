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


#include "spt/sgd.hpp"

#include "spt/errors.hpp"

namespace spt {

void sgd_update(SGDState& state, std::span<ad::Parameter* const> params) {
  if (state.velocity.empty()) {
    state.velocity.reserve(params.size());
    for (const ad::Parameter* p : params) state.velocity.emplace_back(p->value.shape());
  }
  if (state.velocity.size() != params.size()) {
    throw ContractError("sgd_update: parameter group changed between updates");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    ad::Parameter& p = *params[k];
    if (!p.requires_grad) continue;
    Tensor& v = state.velocity[k];
    if (!v.same_shape(p.value) || !p.grad.same_shape(p.value)) {
      throw DimensionError("sgd_update: velocity/grad shape mismatch for parameter " +
                           std::to_string(k));
    }
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] = state.momentum * v[i] + p.grad[i] + state.weight_decay * p.value[i];
      p.value[i] -= state.learning_rate * v[i];
    }
  }
}

}  // namespace spt
