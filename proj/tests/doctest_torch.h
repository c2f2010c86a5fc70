#ifndef LVG_TESTS_DOCTEST_TORCH_H
#define LVG_TESTS_DOCTEST_TORCH_H

// torch's c10 logging defines glog-style CHECK/CHECK_EQ/... macros; pull the
// torch headers in first and clear them so doctest's asserts win.
#include <torch/torch.h>

#undef CHECK
#undef CHECK_EQ
#undef CHECK_NE
#undef CHECK_GT
#undef CHECK_GE
#undef CHECK_LT
#undef CHECK_LE

#include <doctest.h>

#endif
