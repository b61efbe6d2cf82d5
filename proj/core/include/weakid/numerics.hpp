#pragma once

#include "weakid/numerics/distributions.hpp"
#include "weakid/numerics/linalg.hpp"
#include "weakid/numerics/quadrature.hpp"
#include "weakid/numerics/rng.hpp"
