// Hand-simplified continental outlines for the coverage base map. Accuracy is
// a few degrees at best; the map only has to look like the world at planet
// and continent zoom.

#include "terratile/coverage.hpp"

namespace terratile {

const std::vector<std::vector<std::pair<double, double>>>& world_outline() {
  static const std::vector<std::vector<std::pair<double, double>>> rings = {
      // North and Central America
      {{-168, 66}, {-162, 70}, {-156, 71.5}, {-140, 70}, {-128, 70.5}, {-115, 68.5}, {-95, 72},
       {-82, 73},  {-80, 63},  {-95, 59},    {-92, 57},  {-82, 55},    {-79, 52},    {-78, 62},
       {-72, 61},  {-64, 60},  {-56, 52},    {-60, 47},  {-66, 44},    {-70, 42},    {-74, 40},
       {-76, 35},  {-81, 31},  {-80, 25},    {-82, 27},  {-84, 30},    {-90, 29.5},  {-97, 27},
       {-97, 22},  {-92, 19},  {-87, 21},    {-88, 16},  {-83, 15},    {-83, 10},    {-77, 8},
       {-80, 7.5}, {-86, 11},  {-92, 14.5},  {-105, 20}, {-106, 23},   {-112, 29},   {-114, 31},
       {-109, 23}, {-112, 25}, {-117, 32},   {-121, 35}, {-124, 40},   {-124, 47},   {-123, 49},
       {-130, 55}, {-138, 59}, {-146, 61},   {-152, 59}, {-158, 57},   {-165, 54.5}, {-162, 58},
       {-166, 62}},
      // South America
      {{-77, 8},   {-72, 12},  {-62, 10.5}, {-52, 5},   {-50, 0},   {-44, -2.5}, {-35, -5.5},
       {-39, -13}, {-41, -22}, {-48, -26},  {-53, -34}, {-58, -38.5}, {-62, -39}, {-65, -42},
       {-68, -50}, {-68, -54}, {-74, -52},  {-75, -46}, {-73, -37}, {-71, -30},  {-70, -18},
       {-76, -14}, {-81, -5},  {-80, 0},    {-77, 4}},
      // Africa
      {{-17, 21}, {-16, 28}, {-9, 32},  {-6, 36},   {10, 37},  {11, 33},  {20, 31},  {30, 31.5},
       {33, 31},  {35, 28},  {43, 12.5}, {51, 12},  {51, 10},  {44, -1},  {40, -10}, {40, -15},
       {35, -24}, {32, -29}, {27, -34}, {20, -35},  {18, -31}, {15, -27}, {12, -17}, {13, -12},
       {12, -5},  {9, -1},   {9, 4},    {4, 6.5},   {-5, 5},   {-8, 4.5}, {-13, 8},  {-17, 14}},
      // Eurasia
      {{-10, 36},  {-9, 43},   {-2, 43.5},  {-4.5, 48}, {2, 51},    {8, 54},    {10, 57.5},
       {12, 56},   {11, 59},   {5, 62},     {14, 68},   {25, 71},   {40, 67.5}, {44, 68.5},
       {60, 69},   {70, 73},   {80, 73},    {100, 77},  {113, 74},  {130, 71},  {150, 71},
       {160, 70},  {170, 70},  {180, 69},   {180, 65},  {178, 62},  {170, 60},  {163, 58},
       {162, 54},  {156, 51},  {156, 57},   {140, 59},  {135, 54},  {141, 52},  {140, 48},
       {135, 43},  {129, 41},  {129, 35},   {126, 35},  {126, 38},  {122, 40},  {118, 38},
       {122, 36},  {120, 31},  {122, 30},   {119, 25},  {110, 21},  {108, 21},  {106, 17},
       {109, 12},  {105, 9},   {103, 10},   {100, 13},  {100, 8},   {104, 1.5}, {101, 3},
       {98, 8},    {98, 16},   {94, 16},    {92, 22},   {86, 21},   {80, 15},   {80, 10},
       {77, 8},    {73, 17},   {72, 21},    {67, 24},   {58, 25},   {57, 26.5}, {50, 30},
       {48, 30},   {50, 26},   {56, 25},    {60, 22},   {57, 18},   {52, 16},   {45, 13},
       {43, 13},   {39, 21},   {35, 28},    {34, 31.5}, {36, 34},   {36, 36.5}, {30, 36},
       {26, 38},   {26, 40},   {24, 40},    {23, 36.5}, {20, 40},   {19, 42},   {13.5, 45.5},
       {12, 44},   {16, 41},   {16, 38},    {12, 42},   {8, 44},    {3, 43},    {0, 39},
       {-2, 36.7}, {-6, 36}},
      // Australia
      {{113, -22}, {114, -26}, {115, -34},   {118, -35}, {124, -34},   {131, -31.5}, {138, -35},
       {141, -38}, {146, -39}, {150, -37.5}, {153, -32}, {153, -25},   {149, -20},   {146, -18.5},
       {145, -15}, {142, -11}, {141, -17},   {136, -15}, {137, -12},   {132, -11},   {129, -15},
       {126, -14}, {122, -17}, {117, -20}},
      // Greenland
      {{-73, 78}, {-60, 82}, {-30, 83.5}, {-20, 81}, {-18, 76}, {-22, 70}, {-32, 68}, {-40, 65},
       {-43, 60}, {-50, 63}, {-54, 67}, {-58, 75}},
      // Antarctica
      {{-180, -90}, {-180, -78}, {-150, -76}, {-120, -73}, {-90, -72}, {-70, -68}, {-57, -63},
       {-60, -75},  {-30, -78},  {0, -70},    {30, -69},   {60, -67},  {90, -66},  {120, -66},
       {150, -68},  {165, -72},  {180, -78},  {180, -90}},
      // Great Britain, Ireland, Iceland
      {{-5.5, 50}, {1.5, 51}, {1.5, 53}, {-0.5, 54.5}, {-2, 56}, {-1.8, 57.6}, {-3, 58.7},
       {-5, 58.6}, {-6, 56.5}, {-5, 55}, {-3, 54.5}, {-4.5, 53}, {-5, 51.6}},
      {{-10, 51.5}, {-6, 52}, {-6, 54}, {-7.5, 55.3}, {-10, 54}},
      {{-24, 65.5}, {-22, 66.5}, {-15, 66.5}, {-13.5, 65}, {-18, 63.3}, {-22, 63.8}},
      // Japan
      {{130, 31}, {132, 34}, {135, 33.5}, {140, 35}, {141, 38}, {142, 41}, {141.5, 45.5},
       {145, 44}, {143, 42}, {140, 41.5}, {139, 38}, {137, 37}, {133, 35.5}, {130, 33.5}},
      // Madagascar, New Guinea, Borneo, Sumatra
      {{49, -12}, {50.5, -15.5}, {47, -25}, {44, -25}, {43.5, -22}, {44, -17}, {46, -15.5}},
      {{131, -1}, {138, -1.5}, {145, -4}, {150, -10.5}, {143, -9}, {141, -9}, {138, -8}, {132, -4}},
      {{109, 2}, {111, -3}, {116, -4}, {118, 1}, {119, 5}, {117, 7}, {115, 5}, {111, 2}},
      {{95, 5.5}, {98, 4}, {104, -2}, {106, -6}, {104, -5.5}, {101, -3}, {97, 2}},
      // New Zealand
      {{173, -35}, {178, -37.5}, {176, -41.5}, {174.5, -41}, {174, -39}},
      {{172.5, -40.5}, {174, -42}, {171, -44.5}, {167, -46.5}, {166.5, -45}, {170, -42}},
  };
  return rings;
}

}  // namespace terratile
