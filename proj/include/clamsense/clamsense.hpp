// SPDX-License-Identifier: Apache-2.0
//
// clamsense: clutter-angle-map aided sensing for bi-static OFDM ISAC
// Copyright (C) 2026 The clamsense authors
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
// ------------------------------------------------------------------------

#pragma once

#include "core.hpp"
#include "scene.hpp"
#include "synth.hpp"
#include "io.hpp"
#include "suppress.hpp"
#include "estimate.hpp"
#include "clam.hpp"
#include "joint.hpp"
#include "pipeline.hpp"
#include "metrics.hpp"
#include "plot.hpp"
