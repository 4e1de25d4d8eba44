#pragma once

#include "robustsim/random.hpp"
#include "robustsim/probdist.hpp"
#include "robustsim/lp.hpp"
#include "robustsim/uncertainty.hpp"
#include "robustsim/model.hpp"
#include "robustsim/gradient.hpp"
#include "robustsim/models.hpp"
#include "robustsim/fwsa.hpp"
#include "robustsim/io.hpp"
#include "robustsim/experiment.hpp"
#include "robustsim/check.hpp"
#include "robustsim/presets.hpp"
