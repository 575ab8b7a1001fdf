/* Checksum trailer.
 * CWE-787: the trailer is written past the end of short buffers. */
#include <string.h>

void append_checksum(char *msg, unsigned int msg_len, const char *sum) {
    memcpy(msg + msg_len, sum, 16);
}
