/* Client-side session state: cursor, per-image drafts, local persistence.
 *
 * The state never holds truth labels; the server payload has none to
 * begin with. Progress and drafts round-trip through a Storage (e.g.
 * localStorage) so a refresh resumes at the first unanswered image.
 */

export type Guess = 'real' | 'synthetic';

export interface Draft {
    guess: Guess | null;
    confidence: number | null;
    explanation: string;
}

interface StoredProgress {
    participantId: string;
    sessionId: string;
    imageIds: string[];
    answered: string[];
    drafts: Record<string, Draft>;
}

export const STORAGE_KEY = 'cellsynth-survey-progress';

export function emptyDraft(): Draft {
    return { guess: null, confidence: null, explanation: '' };
}

export class SessionState {
    readonly participantId: string;
    readonly sessionId: string;
    readonly imageIds: string[];
    private answered: Set<string>;
    private drafts: Map<string, Draft>;
    private readonly storage: Storage | null;
    private readonly storageKey: string;

    constructor(participantId: string, sessionId: string, imageIds: string[],
                storage: Storage | null = null, storageKey: string = STORAGE_KEY) {
        this.participantId = participantId;
        this.sessionId = sessionId;
        this.imageIds = imageIds.slice();
        this.answered = new Set();
        this.drafts = new Map();
        this.storage = storage;
        this.storageKey = storageKey;
        this.persist();
    }

    /* Rebuilds a state from storage; null when nothing usable is there. */
    static resume(storage: Storage, storageKey: string = STORAGE_KEY): SessionState | null {
        const raw = storage.getItem(storageKey);
        if (raw === null) {
            return null;
        }
        let stored: StoredProgress;
        try {
            stored = JSON.parse(raw) as StoredProgress;
        } catch {
            return null;
        }
        if (!stored || !stored.sessionId || !Array.isArray(stored.imageIds)) {
            return null;
        }
        const state = new SessionState(stored.participantId, stored.sessionId,
                                       stored.imageIds, storage, storageKey);
        for (const id of stored.answered ?? []) {
            if (state.imageIds.includes(id)) {
                state.answered.add(id);
            }
        }
        for (const [id, draft] of Object.entries(stored.drafts ?? {})) {
            if (state.imageIds.includes(id)) {
                state.drafts.set(id, draft);
            }
        }
        state.persist();
        return state;
    }

    /* Index of the first unanswered image; equals total when done. */
    get cursor(): number {
        for (let i = 0; i < this.imageIds.length; i += 1) {
            if (!this.answered.has(this.imageIds[i])) {
                return i;
            }
        }
        return this.imageIds.length;
    }

    get total(): number {
        return this.imageIds.length;
    }

    get answeredCount(): number {
        return this.answered.size;
    }

    get done(): boolean {
        return this.answered.size === this.imageIds.length;
    }

    currentImage(): string | null {
        const i = this.cursor;
        return i < this.imageIds.length ? this.imageIds[i] : null;
    }

    draftFor(imageId: string): Draft {
        return this.drafts.get(imageId) ?? emptyDraft();
    }

    updateDraft(imageId: string, patch: Partial<Draft>): Draft {
        const next = { ...this.draftFor(imageId), ...patch };
        if (next.guess === 'real') {
            next.explanation = '';
        }
        this.drafts.set(imageId, next);
        this.persist();
        return next;
    }

    /* Mirrors the server's field validation for submittability. */
    validate(imageId: string): Record<string, string> {
        const draft = this.draftFor(imageId);
        const errors: Record<string, string> = {};
        if (draft.guess !== 'real' && draft.guess !== 'synthetic') {
            errors.guess = "choose 'real' or 'synthetic'";
        }
        if (draft.confidence === null || !Number.isInteger(draft.confidence)
                || draft.confidence < 1 || draft.confidence > 5) {
            errors.confidence = 'choose a confidence from 1 to 5';
        }
        if (draft.guess === 'synthetic' && draft.explanation.trim() === '') {
            errors.explanation = 'explain what looks synthetic';
        }
        return errors;
    }

    canSubmit(imageId: string): boolean {
        return Object.keys(this.validate(imageId)).length === 0;
    }

    markAnswered(imageId: string): void {
        if (!this.imageIds.includes(imageId)) {
            throw new Error(`image ${imageId} is not part of this session`);
        }
        this.answered.add(imageId);
        this.drafts.delete(imageId);
        this.persist();
    }

    clear(): void {
        if (this.storage !== null) {
            this.storage.removeItem(this.storageKey);
        }
    }

    private persist(): void {
        if (this.storage === null) {
            return;
        }
        const stored: StoredProgress = {
            participantId: this.participantId,
            sessionId: this.sessionId,
            imageIds: this.imageIds,
            answered: Array.from(this.answered),
            drafts: Object.fromEntries(this.drafts),
        };
        this.storage.setItem(this.storageKey, JSON.stringify(stored));
    }
}
