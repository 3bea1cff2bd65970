#pragma once

#include "mfpm/app.hpp"
#include "mfpm/config.hpp"
#include "mfpm/errors.hpp"
#include "mfpm/etl.hpp"
#include "mfpm/fixtures.hpp"
#include "mfpm/geometry.hpp"
#include "mfpm/image.hpp"
#include "mfpm/mesh.hpp"
#include "mfpm/optics.hpp"
#include "mfpm/raster.hpp"
#include "mfpm/render.hpp"
#include "mfpm/report.hpp"
#include "mfpm/retina.hpp"
#include "mfpm/scene.hpp"
#include "mfpm/sync.hpp"
#include "mfpm/units.hpp"
#include "mfpm/verify.hpp"
