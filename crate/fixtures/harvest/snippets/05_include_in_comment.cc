// #include <vector>
// #include <cstdio>
int main() {
    int hist[10] = {0};
    int data[100];
    for (int i = 0; i < 100; ++i) {
        data[i] = (i * 7) % 10;
    }
    for (int i = 0; i < 100; ++i) {
        hist[data[i]]++;
    }
    return hist[3];
}
