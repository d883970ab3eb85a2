// Copyright 2026 The selfimprove Authors.
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

#include "selfimprove/backend.hpp"
#include "selfimprove/consensus.hpp"
#include "selfimprove/corpus.hpp"
#include "selfimprove/evalharness.hpp"
#include "selfimprove/extraction.hpp"
#include "selfimprove/http_backend.hpp"
#include "selfimprove/pipeline.hpp"
#include "selfimprove/prompting.hpp"
#include "selfimprove/selfgen.hpp"
