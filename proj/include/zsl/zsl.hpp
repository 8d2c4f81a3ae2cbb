/* Copyright 2026 The zsl-music Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#pragma once

// Umbrella header.

#include "zsl/audio_encoder.hpp"
#include "zsl/checkpoint.hpp"
#include "zsl/config.hpp"
#include "zsl/corpus.hpp"
#include "zsl/diff_core.hpp"
#include "zsl/dsp.hpp"
#include "zsl/error.hpp"
#include "zsl/evaluation.hpp"
#include "zsl/gradcheck.hpp"
#include "zsl/inference.hpp"
#include "zsl/ndarray.hpp"
#include "zsl/pipeline.hpp"
#include "zsl/semantic_point.hpp"
#include "zsl/trainer.hpp"
#include "zsl/wav.hpp"
#include "zsl/word_space.hpp"
