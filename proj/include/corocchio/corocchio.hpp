#pragma once

#include "corocchio/clicksim.hpp"
#include "corocchio/errors.hpp"
#include "corocchio/evalx.hpp"
#include "corocchio/feedback.hpp"
#include "corocchio/harness.hpp"
#include "corocchio/io.hpp"
#include "corocchio/parallel.hpp"
#include "corocchio/random.hpp"
#include "corocchio/synth.hpp"
#include "corocchio/vecstore.hpp"
