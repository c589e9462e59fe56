#pragma once

#include "pavglm/basis.hpp"
#include "pavglm/dispersion.hpp"
#include "pavglm/estimation.hpp"
#include "pavglm/format.hpp"
#include "pavglm/inference.hpp"
#include "pavglm/io.hpp"
#include "pavglm/kernels.hpp"
#include "pavglm/model.hpp"
#include "pavglm/optimize.hpp"
#include "pavglm/parallel.hpp"
#include "pavglm/pipeline.hpp"
#include "pavglm/response.hpp"
#include "pavglm/rng.hpp"
#include "pavglm/robustness.hpp"
#include "pavglm/synth.hpp"
#include "pavglm/warp.hpp"
