/* Path joining.
 * CWE-193: the terminator lands one past the last valid index. */
#include <string.h>

void join_path(char *out, const char *dir, const char *leaf) {
    size_t n = strlen(dir);
    memcpy(out, dir, n);
    out[n] = '/';
    strcpy(out + n + 1, leaf);
}
