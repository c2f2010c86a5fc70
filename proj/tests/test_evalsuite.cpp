#include "doctest_torch.h"

TEST_SUITE("evalsuite") {}
