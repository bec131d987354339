#pragma once

#include "gpopt/acquisition.hpp"
#include "gpopt/config.hpp"
#include "gpopt/error.hpp"
#include "gpopt/external.hpp"
#include "gpopt/gp.hpp"
#include "gpopt/kernels.hpp"
#include "gpopt/linalg.hpp"
#include "gpopt/loop.hpp"
#include "gpopt/objectives.hpp"
#include "gpopt/sequence.hpp"
#include "gpopt/trace_io.hpp"
