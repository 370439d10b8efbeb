#ifndef POLARSCAN_POLARSCAN_HPP
#define POLARSCAN_POLARSCAN_HPP

#include "polarscan/aggregation.hpp"
#include "polarscan/binary_io.hpp"
#include "polarscan/config.hpp"
#include "polarscan/curvature.hpp"
#include "polarscan/errors.hpp"
#include "polarscan/features.hpp"
#include "polarscan/metrics.hpp"
#include "polarscan/pipeline.hpp"
#include "polarscan/png.hpp"
#include "polarscan/pointcloud.hpp"
#include "polarscan/projection.hpp"
#include "polarscan/retrieval.hpp"
#include "polarscan/synthetic.hpp"
#include "polarscan/text.hpp"

#endif  // POLARSCAN_POLARSCAN_HPP
