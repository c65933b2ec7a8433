#pragma once

#include "lumaforge/imgcore.hpp"
#include "lumaforge/raster_io.hpp"
#include "lumaforge/keying.hpp"
#include "lumaforge/harvest.hpp"
#include "lumaforge/random.hpp"
#include "lumaforge/compositor.hpp"
#include "lumaforge/cocoio.hpp"
#include "lumaforge/evalkit.hpp"
