#pragma once

#include "msfilter/analysis.hpp"
#include "msfilter/errors.hpp"
#include "msfilter/filter.hpp"
#include "msfilter/harness.hpp"
#include "msfilter/integrator.hpp"
#include "msfilter/math_util.hpp"
#include "msfilter/model.hpp"
#include "msfilter/oracle.hpp"
#include "msfilter/rng.hpp"
