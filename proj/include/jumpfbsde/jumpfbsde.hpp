#pragma once

#include "jumpfbsde/backward.hpp"
#include "jumpfbsde/condexp.hpp"
#include "jumpfbsde/config.hpp"
#include "jumpfbsde/errors.hpp"
#include "jumpfbsde/forward.hpp"
#include "jumpfbsde/harness.hpp"
#include "jumpfbsde/model.hpp"
#include "jumpfbsde/problems.hpp"
#include "jumpfbsde/random.hpp"
#include "jumpfbsde/recombine.hpp"
#include "jumpfbsde/timegrid.hpp"
