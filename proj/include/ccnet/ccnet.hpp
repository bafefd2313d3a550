#pragma once

#include "ccnet/tensor.hpp"
#include "ccnet/autograd.hpp"
#include "ccnet/ops.hpp"
#include "ccnet/layers.hpp"
#include "ccnet/blocks.hpp"
#include "ccnet/strip_attention.hpp"
#include "ccnet/rsam.hpp"
#include "ccnet/backbone.hpp"
#include "ccnet/losses_metrics.hpp"
#include "ccnet/image_io.hpp"
#include "ccnet/data_synth.hpp"
#include "ccnet/optim.hpp"
#include "ccnet/checkpoint.hpp"
#include "ccnet/train.hpp"
#include "ccnet/gradcheck.hpp"
#include "ccnet/config.hpp"
#include "ccnet/plot.hpp"
