/* Service banner handling.
 * CWE-120: classic unbounded string copy into a fixed buffer. */
#include <string.h>

void set_banner(char *stored, const char *user_banner) {
    char scratch[64];
    strcpy(scratch, user_banner);
    strcpy(stored, scratch);
}
