// Copyright 2026 The hybridqkd Authors
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

#include "hybridqkd/analysis.hpp"
#include "hybridqkd/calibrate.hpp"
#include "hybridqkd/channel.hpp"
#include "hybridqkd/config.hpp"
#include "hybridqkd/error.hpp"
#include "hybridqkd/experiment.hpp"
#include "hybridqkd/io.hpp"
#include "hybridqkd/mode_state.hpp"
#include "hybridqkd/nelder_mead.hpp"
#include "hybridqkd/optics.hpp"
#include "hybridqkd/random.hpp"
#include "hybridqkd/source_detect.hpp"
