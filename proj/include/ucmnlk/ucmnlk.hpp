#pragma once

#include "ucmnlk/errors.hpp"
#include "ucmnlk/numeric.hpp"
#include "ucmnlk/mnl_mdp.hpp"
#include "ucmnlk/random_mdp.hpp"
#include "ucmnlk/oracle.hpp"
#include "ucmnlk/estimator.hpp"
#include "ucmnlk/devi.hpp"
#include "ucmnlk/agent.hpp"
#include "ucmnlk/hard_instances.hpp"
#include "ucmnlk/instance_io.hpp"
#include "ucmnlk/harness.hpp"
#include "ucmnlk/coverage.hpp"
