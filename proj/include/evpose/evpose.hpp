#pragma once

#include "evpose/config.hpp"
#include "evpose/errors.hpp"
#include "evpose/evaluation.hpp"
#include "evpose/events_io.hpp"
#include "evpose/geometry.hpp"
#include "evpose/lifting.hpp"
#include "evpose/representations.hpp"
#include "evpose/simulator.hpp"
#include "evpose/tensor_io.hpp"
#include "evpose/types.hpp"
