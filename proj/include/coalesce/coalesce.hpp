#pragma once

#include "coalesce/cholesky.hpp"
#include "coalesce/coalitions.hpp"
#include "coalesce/constrained_solver.hpp"
#include "coalesce/error.hpp"
#include "coalesce/exact_oracle.hpp"
#include "coalesce/shapley.hpp"
#include "coalesce/tabular.hpp"
