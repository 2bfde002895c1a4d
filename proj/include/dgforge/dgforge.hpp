#pragma once

#include "dgforge/checkpoint.hpp"
#include "dgforge/config.hpp"
#include "dgforge/dataset.hpp"
#include "dgforge/diffusion.hpp"
#include "dgforge/error.hpp"
#include "dgforge/eval.hpp"
#include "dgforge/geometry.hpp"
#include "dgforge/kinematics.hpp"
#include "dgforge/lp.hpp"
#include "dgforge/mesh.hpp"
#include "dgforge/nn.hpp"
#include "dgforge/object.hpp"
#include "dgforge/objectives.hpp"
#include "dgforge/parallel.hpp"
#include "dgforge/pipeline.hpp"
#include "dgforge/rng.hpp"
#include "dgforge/sampler.hpp"
#include "dgforge/training.hpp"
