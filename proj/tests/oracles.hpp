#pragma once

#include "pfx4/verify.hpp"

namespace oracle = pfx4::verify;
