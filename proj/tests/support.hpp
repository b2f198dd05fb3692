#pragma once

#include <gtest/gtest.h>

#include "generators.hpp"

#define EXPECT_ERROR_CODE(stmt, expected)                                       \
  do {                                                                          \
    try {                                                                       \
      stmt;                                                                     \
      ADD_FAILURE() << "expected " << tbctl::to_string(expected) << ", no throw"; \
    } catch (const tbctl::Error& e_) {                                          \
      EXPECT_EQ(e_.code(), expected) << e_.what();                              \
    }                                                                           \
  } while (0)

