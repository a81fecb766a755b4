#pragma once

#include "snaklat/asymptotics.hpp"
#include "snaklat/branch.hpp"
#include "snaklat/codim2.hpp"
#include "snaklat/continuation.hpp"
#include "snaklat/dynamics.hpp"
#include "snaklat/error.hpp"
#include "snaklat/lattice.hpp"
#include "snaklat/model.hpp"
#include "snaklat/solver.hpp"
#include "snaklat/spectral.hpp"
#include "snaklat/studies.hpp"
#include "snaklat/version.hpp"
