#pragma once

#include "znext/augment.hpp"
#include "znext/checkpoint.hpp"
#include "znext/config.hpp"
#include "znext/dataset.hpp"
#include "znext/encoder.hpp"
#include "znext/gradcheck.hpp"
#include "znext/gradcheck_suite.hpp"
#include "znext/image.hpp"
#include "znext/layers.hpp"
#include "znext/losses.hpp"
#include "znext/metrics.hpp"
#include "znext/mhsiu.hpp"
#include "znext/model.hpp"
#include "znext/ops_basic.hpp"
#include "znext/ops_spatial.hpp"
#include "znext/optim.hpp"
#include "znext/pnm.hpp"
#include "znext/pyramid.hpp"
#include "znext/random.hpp"
#include "znext/rgpu.hpp"
#include "znext/synth.hpp"
#include "znext/tensor.hpp"
#include "znext/train.hpp"
