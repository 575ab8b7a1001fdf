/* Flag computation. */
static int g_last_flags;

int compute_flags(int mode) {
    int flags;
    if (mode > 0) {
        flags = mode << 1;
    }
    g_last_flags = flags;
    return flags;
}
