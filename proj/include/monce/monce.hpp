#pragma once

#include "monce/features.hpp"
#include "monce/harness.hpp"
#include "monce/io.hpp"
#include "monce/losses.hpp"
#include "monce/sinkhorn.hpp"
#include "monce/types.hpp"
#include "monce/weighting.hpp"
