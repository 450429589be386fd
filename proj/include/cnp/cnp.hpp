#pragma once

// Umbrella header for the contract net library.

#include "cnp/agents.hpp"
#include "cnp/core.hpp"
#include "cnp/experiment.hpp"
#include "cnp/messaging.hpp"
#include "cnp/metrics.hpp"
#include "cnp/protocol.hpp"
#include "cnp/scenario.hpp"
#include "cnp/sim.hpp"
#include "cnp/validator.hpp"
