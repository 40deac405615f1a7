#pragma once

#include "geomix/data.hpp"
#include "geomix/errors.hpp"
#include "geomix/gibbs_mixture.hpp"
#include "geomix/gibbs_typical.hpp"
#include "geomix/io.hpp"
#include "geomix/mesh.hpp"
#include "geomix/predict.hpp"
#include "geomix/rng.hpp"
#include "geomix/score.hpp"
#include "geomix/simulate.hpp"
#include "geomix/sparse.hpp"
#include "geomix/spde.hpp"
