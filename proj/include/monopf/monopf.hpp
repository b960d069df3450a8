#pragma once

// Umbrella header.

#include "monopf/core.hpp"
#include "monopf/network.hpp"
#include "monopf/operator.hpp"
#include "monopf/sdp.hpp"
#include "monopf/domain.hpp"
#include "monopf/vi_solver.hpp"
#include "monopf/newton.hpp"
#include "monopf/experiments.hpp"
