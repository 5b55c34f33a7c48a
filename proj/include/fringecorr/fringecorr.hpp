#pragma once

#include "fringecorr/bessel.hpp"
#include "fringecorr/correlate.hpp"
#include "fringecorr/events.hpp"
#include "fringecorr/fit.hpp"
#include "fringecorr/io.hpp"
#include "fringecorr/model.hpp"
#include "fringecorr/pipeline.hpp"
#include "fringecorr/reconstruct.hpp"
#include "fringecorr/simulate.hpp"
#include "fringecorr/version.hpp"
