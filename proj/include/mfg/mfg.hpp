#pragma once

#include "mfg/torus_grid.hpp"
#include "mfg/hamiltonian.hpp"
#include "mfg/coupling.hpp"
#include "mfg/linear_pde.hpp"
#include "mfg/discrete_system.hpp"
#include "mfg/policy_iteration.hpp"
#include "mfg/newton.hpp"
#include "mfg/rates.hpp"
