/* Binary PGM (P5) decoder; the survey service serves 8-bit grayscale. */

export interface GrayImage {
    width: number;
    height: number;
    pixels: Uint8Array;
}

function isSpace(byte: number): boolean {
    return byte === 0x20 || byte === 0x09 || byte === 0x0a || byte === 0x0d;
}

/* Reads the next whitespace-delimited header token, skipping #-comments. */
function nextToken(bytes: Uint8Array, pos: number): [string, number] {
    while (pos < bytes.length) {
        if (isSpace(bytes[pos])) {
            pos += 1;
        } else if (bytes[pos] === 0x23) {
            while (pos < bytes.length && bytes[pos] !== 0x0a) {
                pos += 1;
            }
        } else {
            break;
        }
    }
    const start = pos;
    while (pos < bytes.length && !isSpace(bytes[pos])) {
        pos += 1;
    }
    if (start === pos) {
        throw new Error('truncated PGM header');
    }
    let token = '';
    for (let i = start; i < pos; i += 1) {
        token += String.fromCharCode(bytes[i]);
    }
    return [token, pos];
}

export function decodePgm(bytes: Uint8Array): GrayImage {
    let pos: number;
    let magic: string;
    [magic, pos] = nextToken(bytes, 0);
    if (magic !== 'P5') {
        throw new Error(`not a binary PGM (magic ${magic})`);
    }
    let widthTok: string, heightTok: string, maxvalTok: string;
    [widthTok, pos] = nextToken(bytes, pos);
    [heightTok, pos] = nextToken(bytes, pos);
    [maxvalTok, pos] = nextToken(bytes, pos);
    const width = Number(widthTok);
    const height = Number(heightTok);
    const maxval = Number(maxvalTok);
    if (!Number.isInteger(width) || !Number.isInteger(height) || width <= 0 || height <= 0) {
        throw new Error('bad PGM dimensions');
    }
    if (!Number.isInteger(maxval) || maxval <= 0 || maxval > 255) {
        throw new Error(`unsupported maxval ${maxvalTok}`);
    }
    pos += 1; // single whitespace byte separates header from raster
    const need = width * height;
    if (bytes.length - pos < need) {
        throw new Error('truncated PGM raster');
    }
    return { width, height, pixels: bytes.slice(pos, pos + need) };
}
