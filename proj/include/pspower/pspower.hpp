#pragma once

#include "pspower/errors.hpp"
#include "pspower/special_functions.hpp"
#include "pspower/normal.hpp"
#include "pspower/quadrature.hpp"
#include "pspower/propensity.hpp"
#include "pspower/outcome.hpp"
#include "pspower/variance.hpp"
#include "pspower/parallel.hpp"
#include "pspower/design.hpp"
#include "pspower/dataset.hpp"
#include "pspower/logistic.hpp"
#include "pspower/hajek.hpp"
#include "pspower/simharness.hpp"
#include "pspower/io.hpp"
