#pragma once

#include "afn/autograd.hpp"
#include "afn/checkpoint.hpp"
#include "afn/cli.hpp"
#include "afn/compare.hpp"
#include "afn/config.hpp"
#include "afn/conv.hpp"
#include "afn/error.hpp"
#include "afn/evaluation.hpp"
#include "afn/gradcheck.hpp"
#include "afn/inference.hpp"
#include "afn/model.hpp"
#include "afn/png_io.hpp"
#include "afn/raster_io.hpp"
#include "afn/reference.hpp"
#include "afn/synthetic_terrain.hpp"
#include "afn/tensor.hpp"
#include "afn/training.hpp"
#include "afn/verify.hpp"
