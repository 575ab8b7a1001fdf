/* History trimming.
 * CWE-124: a backward offset is subtracted without validation. */
#include <string.h>

void trim_history(char *buf, unsigned int used, unsigned int back) {
    char *mark = buf + used - back;
    memcpy(mark, "TRIM", 4);
}
