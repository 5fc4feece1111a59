#include <cstdio>
#include <sched.h>

// The shared counter is updated without synchronization. The yield between
// the read and the write lets other threads run in the gap even on one core.
volatile long counter = 0;

int main() {
    const int n = 4000;
#pragma omp parallel for
    for (int i = 0; i < n; ++i) {
        long seen = counter;
        sched_yield();
        counter = seen + 1;
    }
    std::printf("counter = %ld\n", counter);
    return 0;
}
