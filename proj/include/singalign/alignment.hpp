#pragma once

#include <vector>

namespace singalign {

struct PhoneSegment {
  int phone = -1;
  int start_frame = 0;
  int end_frame = 0;  // exclusive
};

struct AlignedFrame {
  int pdf = -1;
  int phone = -1;
  int position = -1;  // emitting-state index within the phone
};

struct AlignmentResult {
  std::vector<AlignedFrame> frames;
  std::vector<PhoneSegment> segments;
  double total_score = 0.0;  // joint path log score under the aligning model
};

}  // namespace singalign
