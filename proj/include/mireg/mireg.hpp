#pragma once

#include "mireg/augment.hpp"
#include "mireg/error.hpp"
#include "mireg/grid.hpp"
#include "mireg/image.hpp"
#include "mireg/metrics.hpp"
#include "mireg/optimizer.hpp"
#include "mireg/regularize.hpp"
#include "mireg/resample.hpp"
#include "mireg/rng.hpp"
#include "mireg/sampling.hpp"
#include "mireg/similarity.hpp"
#include "mireg/synthetic.hpp"
#include "mireg/transform.hpp"
