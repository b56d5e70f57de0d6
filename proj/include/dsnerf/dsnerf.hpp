#pragma once

#include "dsnerf/checkpoint.hpp"
#include "dsnerf/evalsuite.hpp"
#include "dsnerf/field.hpp"
#include "dsnerf/geometry.hpp"
#include "dsnerf/image.hpp"
#include "dsnerf/losses.hpp"
#include "dsnerf/metrics.hpp"
#include "dsnerf/pointcloud.hpp"
#include "dsnerf/rays.hpp"
#include "dsnerf/renderer.hpp"
#include "dsnerf/scene.hpp"
#include "dsnerf/synthscene.hpp"
#include "dsnerf/trainer.hpp"
