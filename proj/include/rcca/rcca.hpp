#pragma once

#include "rcca/biplot.hpp"
#include "rcca/cca_core.hpp"
#include "rcca/compare.hpp"
#include "rcca/csv.hpp"
#include "rcca/datamodel.hpp"
#include "rcca/error.hpp"
#include "rcca/estimate_io.hpp"
#include "rcca/estimators.hpp"
#include "rcca/experiments.hpp"
#include "rcca/glasso.hpp"
#include "rcca/linalg.hpp"
#include "rcca/metrics.hpp"
#include "rcca/random.hpp"
#include "rcca/synth.hpp"
