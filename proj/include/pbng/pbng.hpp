#pragma once

#include "pbng/baselines.hpp"
#include "pbng/collision.hpp"
#include "pbng/coloring.hpp"
#include "pbng/common.hpp"
#include "pbng/constraints.hpp"
#include "pbng/generators.hpp"
#include "pbng/harness.hpp"
#include "pbng/io.hpp"
#include "pbng/materials.hpp"
#include "pbng/mesh.hpp"
#include "pbng/model.hpp"
#include "pbng/newton.hpp"
#include "pbng/pbng_solver.hpp"
#include "pbng/scene.hpp"
