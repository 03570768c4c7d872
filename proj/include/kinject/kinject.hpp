#pragma once

// Everything at once.

#include "kinject/autodiff.hpp"
#include "kinject/config.hpp"
#include "kinject/data.hpp"
#include "kinject/error.hpp"
#include "kinject/eval.hpp"
#include "kinject/interpret.hpp"
#include "kinject/knowledge.hpp"
#include "kinject/losses.hpp"
#include "kinject/metrics.hpp"
#include "kinject/model_io.hpp"
#include "kinject/models.hpp"
#include "kinject/plot.hpp"
#include "kinject/random.hpp"
#include "kinject/train.hpp"
