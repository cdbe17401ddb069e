#pragma once

#include "evfocus/conv.hpp"
#include "evfocus/events.hpp"
#include "evfocus/geometry.hpp"
#include "evfocus/image.hpp"
#include "evfocus/io.hpp"
#include "evfocus/iwe.hpp"
#include "evfocus/losses.hpp"
#include "evfocus/optimize.hpp"
#include "evfocus/parallel.hpp"
#include "evfocus/pdf.hpp"
#include "evfocus/poses.hpp"
#include "evfocus/synth.hpp"
#include "evfocus/warp.hpp"
