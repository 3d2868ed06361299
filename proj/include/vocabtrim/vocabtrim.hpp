#pragma once

#include "vocabtrim/calibration.hpp"
#include "vocabtrim/common.hpp"
#include "vocabtrim/decode.hpp"
#include "vocabtrim/frequency.hpp"
#include "vocabtrim/linear_head.hpp"
#include "vocabtrim/lm.hpp"
#include "vocabtrim/metrics.hpp"
#include "vocabtrim/model_io.hpp"
#include "vocabtrim/pipeline.hpp"
#include "vocabtrim/rng.hpp"
#include "vocabtrim/textgen.hpp"
#include "vocabtrim/trim.hpp"
#include "vocabtrim/vocab.hpp"
