#pragma once

#include "riesz/data.hpp"
#include "riesz/errors.hpp"
#include "riesz/evaluation.hpp"
#include "riesz/experiment.hpp"
#include "riesz/functional.hpp"
#include "riesz/harness.hpp"
#include "riesz/linear_solvers.hpp"
#include "riesz/neural.hpp"
#include "riesz/serialization.hpp"
#include "riesz/sieve_basis.hpp"
