#pragma once

#include "bestfit/closure.hpp"
#include "bestfit/config.hpp"
#include "bestfit/ensemble.hpp"
#include "bestfit/errors.hpp"
#include "bestfit/gaussian.hpp"
#include "bestfit/integrators.hpp"
#include "bestfit/io.hpp"
#include "bestfit/linalg.hpp"
#include "bestfit/moments.hpp"
#include "bestfit/phase_system.hpp"
#include "bestfit/riccati.hpp"
#include "bestfit/rng.hpp"
#include "bestfit/stat_model.hpp"
#include "bestfit/stats.hpp"
