#pragma once

#include "rdpg/alignment.hpp"
#include "rdpg/dynamics.hpp"
#include "rdpg/errors.hpp"
#include "rdpg/experiments.hpp"
#include "rdpg/geometry.hpp"
#include "rdpg/inference.hpp"
#include "rdpg/io.hpp"
#include "rdpg/model.hpp"
#include "rdpg/observation.hpp"
#include "rdpg/rng.hpp"
#include "rdpg/serialize.hpp"
#include "rdpg/stats.hpp"
#include "rdpg/types.hpp"
