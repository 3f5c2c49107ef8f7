#pragma once

// Targetless multi-LiDAR extrinsic calibration: feature-based coarse
// alignment, GICP fine registration with fitness-ordered match-and-merge,
// and LiDAR-to-ground calibration.

#include "mlcal/coarse.hpp"
#include "mlcal/config.hpp"
#include "mlcal/evaluate.hpp"
#include "mlcal/fpfh.hpp"
#include "mlcal/gicp.hpp"
#include "mlcal/ground.hpp"
#include "mlcal/kdtree.hpp"
#include "mlcal/pcd_io.hpp"
#include "mlcal/pipeline.hpp"
#include "mlcal/preprocess.hpp"
#include "mlcal/rng.hpp"
#include "mlcal/synth.hpp"
#include "mlcal/types.hpp"
