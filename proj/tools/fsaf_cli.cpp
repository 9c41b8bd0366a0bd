#include <cstdio>

int main() {
    std::puts("fsaf: placeholder");
    return 0;
}
