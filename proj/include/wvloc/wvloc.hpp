#pragma once

// Umbrella header: the whole joint wireless-visual localization library.

#include "wvloc/channel.hpp"
#include "wvloc/coarse.hpp"
#include "wvloc/config.hpp"
#include "wvloc/database.hpp"
#include "wvloc/errors.hpp"
#include "wvloc/evaluate.hpp"
#include "wvloc/fine.hpp"
#include "wvloc/geometry.hpp"
#include "wvloc/hashing.hpp"
#include "wvloc/matrix.hpp"
#include "wvloc/partition.hpp"
#include "wvloc/rng.hpp"
#include "wvloc/scene.hpp"
#include "wvloc/serialization.hpp"
#include "wvloc/survey.hpp"
#include "wvloc/types.hpp"
