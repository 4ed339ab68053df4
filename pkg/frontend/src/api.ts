/* Typed client for the survey HTTP API.
 *
 * Field-level rejections come back as a resolved FieldErrors value;
 * transport failures (server down, connection reset) propagate as
 * thrown errors so callers can offer a retry.
 */

export interface SessionView {
    session_id: string;
    image_ids: string[];
}

export interface ResponsePayload {
    session_id: string;
    participant_id: string;
    image_id: string;
    guess: 'real' | 'synthetic';
    confidence: number;
    explanation: string;
    timestamp: number;
}

export interface Ack {
    ok: boolean;
    participant_id?: string;
    image_id?: string;
    errors?: Record<string, string>;
}

export class ApiClient {
    private readonly base: string;

    constructor(baseUrl: string) {
        this.base = baseUrl.replace(/\/+$/, '');
    }

    async fetchSession(seed: number): Promise<SessionView> {
        const res = await fetch(`${this.base}/api/session?seed=${seed}`);
        if (!res.ok) {
            throw new Error(`session request failed: HTTP ${res.status}`);
        }
        const body = (await res.json()) as SessionView;
        if (!body.session_id || !Array.isArray(body.image_ids)) {
            throw new Error('malformed session payload');
        }
        return body;
    }

    imageUrl(imageId: string): string {
        return `${this.base}/api/image/${encodeURIComponent(imageId)}`;
    }

    async fetchImageBytes(imageId: string): Promise<Uint8Array> {
        const res = await fetch(this.imageUrl(imageId));
        if (!res.ok) {
            throw new Error(`image request failed: HTTP ${res.status}`);
        }
        return new Uint8Array(await res.arrayBuffer());
    }

    async postResponse(payload: ResponsePayload): Promise<Ack> {
        const res = await fetch(`${this.base}/api/response`, {
            method: 'POST',
            headers: { 'Content-Type': 'application/json' },
            body: JSON.stringify(payload),
        });
        return (await res.json()) as Ack;
    }

    reportUrl(): string {
        return `${this.base}/api/report`;
    }
}
