// Copyright 2026 The fferm Authors
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

#ifndef FFERM_FFERM_HPP_
#define FFERM_FFERM_HPP_

#include "fferm/classifier.hpp"
#include "fferm/dataset.hpp"
#include "fferm/divergence.hpp"
#include "fferm/dro.hpp"
#include "fferm/error.hpp"
#include "fferm/estimators.hpp"
#include "fferm/experiment.hpp"
#include "fferm/metrics.hpp"
#include "fferm/rng.hpp"
#include "fferm/trainer.hpp"

#endif  // FFERM_FFERM_HPP_
