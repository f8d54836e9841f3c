#pragma once

#include "liouville/fock.hpp"
#include "liouville/operators.hpp"
#include "liouville/krylov.hpp"
#include "liouville/spectrum.hpp"
#include "liouville/dynamics.hpp"
