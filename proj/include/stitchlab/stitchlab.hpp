#pragma once

#include "stitchlab/data.hpp"
#include "stitchlab/errors.hpp"
#include "stitchlab/experiments.hpp"
#include "stitchlab/ops.hpp"
#include "stitchlab/png.hpp"
#include "stitchlab/resnet.hpp"
#include "stitchlab/stitch.hpp"
#include "stitchlab/tensor.hpp"
#include "stitchlab/train.hpp"
