/* One-image-per-screen survey flow.
 *
 * Start screen -> 30 single-image screens -> completion screen with the
 * report link. No correctness feedback during the session, no truth
 * labels anywhere client-side. A failed submission keeps the drafted
 * answer and shows a retry banner; at most one submission is in flight.
 *
 * render() rebuilds the DOM synchronously so tests and event handlers
 * see the new screen immediately; the image raster loads in the
 * background (cached per id) and settled() awaits both it and any
 * in-flight submission.
 */

import { Ack, ApiClient } from './api.js';
import { decodePgm, GrayImage } from './pgm.js';
import { Guess, SessionState, STORAGE_KEY } from './state.js';

const CONFIDENCE_LABELS = ['1 (guessing)', '2', '3', '4', '5 (certain)'];

export class SurveyApp {
    private readonly root: HTMLElement;
    private readonly api: ApiClient;
    private readonly storage: Storage;
    private state: SessionState | null = null;
    private inflight: Promise<void> | null = null;
    private painting: Promise<void> | null = null;
    private retryMessage: string | null = null;
    private imageCache = new Map<string, GrayImage>();

    constructor(root: HTMLElement, api: ApiClient, storage: Storage) {
        this.root = root;
        this.api = api;
        this.storage = storage;
    }

    /* Resumes a stored session when one matches, otherwise starts anew. */
    async start(participantId: string, seed: number): Promise<void> {
        const resumed = SessionState.resume(this.storage, STORAGE_KEY);
        if (resumed !== null && resumed.participantId === participantId) {
            this.state = resumed;
        } else {
            const session = await this.api.fetchSession(seed);
            this.state = new SessionState(participantId, session.session_id,
                                          session.image_ids, this.storage);
        }
        this.render();
        await this.settled();
    }

    /* Settles once pending submissions and image loads have finished. */
    async settled(): Promise<void> {
        while (this.inflight !== null || this.painting !== null) {
            await (this.inflight ?? this.painting);
        }
    }

    render(): void {
        if (this.state === null) {
            return;
        }
        if (this.state.done) {
            this.renderCompletion();
        } else {
            this.renderQuestion();
        }
    }

    private renderCompletion(): void {
        const state = this.state as SessionState;
        this.root.innerHTML = '';
        const panel = el('div', 'panel complete');
        panel.appendChild(el('h2', '', 'All images reviewed'));
        panel.appendChild(el('p', '', `Thank you. ${state.answeredCount} of `
            + `${state.total} responses were recorded.`));
        const link = el('a', 'report-link', 'View the aggregate report') as HTMLAnchorElement;
        link.href = this.api.reportUrl();
        link.id = 'report-link';
        panel.appendChild(link);
        this.root.appendChild(panel);
    }

    private renderQuestion(): void {
        const state = this.state as SessionState;
        const imageId = state.currentImage() as string;
        const draft = state.draftFor(imageId);

        this.root.innerHTML = '';
        const panel = el('div', 'panel question');

        const progress = el('div', 'progress');
        progress.id = 'progress';
        progress.textContent = `Image ${state.cursor + 1} of ${state.total}`;
        panel.appendChild(progress);

        const figure = el('div', 'figure');
        const canvas = document.createElement('canvas');
        canvas.id = 'survey-image';
        canvas.setAttribute('data-image-id', imageId);
        figure.appendChild(canvas);
        panel.appendChild(figure);

        if (this.retryMessage !== null) {
            const banner = el('div', 'banner error');
            banner.id = 'retry-banner';
            banner.textContent = this.retryMessage;
            const retry = el('button', 'retry', 'Retry') as HTMLButtonElement;
            retry.id = 'retry-button';
            retry.addEventListener('click', () => this.beginSubmit());
            banner.appendChild(retry);
            panel.appendChild(banner);
        }

        const form = el('div', 'form');

        const guessRow = el('div', 'row guess-row');
        for (const guess of ['real', 'synthetic'] as Guess[]) {
            const label = el('label', 'choice');
            const input = document.createElement('input');
            input.type = 'radio';
            input.name = 'guess';
            input.value = guess;
            input.id = `guess-${guess}`;
            input.checked = draft.guess === guess;
            input.addEventListener('change', () => {
                state.updateDraft(imageId, { guess });
                this.render();
            });
            label.appendChild(input);
            label.appendChild(document.createTextNode(` ${guess}`));
            guessRow.appendChild(label);
        }
        form.appendChild(guessRow);

        const confRow = el('div', 'row confidence-row');
        confRow.appendChild(el('span', 'field-label', 'Confidence'));
        const select = document.createElement('select');
        select.id = 'confidence';
        const placeholder = document.createElement('option');
        placeholder.value = '';
        placeholder.textContent = 'pick';
        placeholder.disabled = true;
        placeholder.selected = draft.confidence === null;
        select.appendChild(placeholder);
        CONFIDENCE_LABELS.forEach((text, i) => {
            const option = document.createElement('option');
            option.value = String(i + 1);
            option.textContent = text;
            option.selected = draft.confidence === i + 1;
            select.appendChild(option);
        });
        select.addEventListener('change', () => {
            state.updateDraft(imageId, { confidence: Number(select.value) });
            this.render();
        });
        confRow.appendChild(select);
        form.appendChild(confRow);

        const submit = document.createElement('button');
        submit.id = 'submit';
        submit.textContent = 'Submit';

        if (draft.guess === 'synthetic') {
            const explRow = el('div', 'row explanation-row');
            explRow.appendChild(el('span', 'field-label',
                                   'What looks synthetic?'));
            const box = document.createElement('textarea');
            box.id = 'explanation';
            box.rows = 3;
            box.value = draft.explanation;
            box.addEventListener('input', () => {
                state.updateDraft(imageId, { explanation: box.value });
                submit.disabled = !state.canSubmit(imageId);
            });
            explRow.appendChild(box);
            form.appendChild(explRow);
        }

        submit.disabled = !state.canSubmit(imageId) || this.inflight !== null;
        submit.addEventListener('click', () => this.beginSubmit());
        form.appendChild(submit);

        panel.appendChild(form);
        this.root.appendChild(panel);

        const paint = this.paintImage(canvas, imageId).finally(() => {
            if (this.painting === paint) {
                this.painting = null;
            }
        });
        this.painting = paint;
    }

    /* Draws the PGM at native resolution; CSS handles display scaling. */
    private async paintImage(canvas: HTMLCanvasElement, imageId: string): Promise<void> {
        let image = this.imageCache.get(imageId);
        if (image === undefined) {
            let bytes: Uint8Array;
            try {
                bytes = await this.api.fetchImageBytes(imageId);
            } catch {
                canvas.setAttribute('data-load-error', '1');
                return;
            }
            image = decodePgm(bytes);
            this.imageCache.set(imageId, image);
        }
        canvas.width = image.width;
        canvas.height = image.height;
        const ctx = canvas.getContext('2d');
        if (ctx === null) {
            return;
        }
        const rgba = new Uint8ClampedArray(image.width * image.height * 4);
        for (let i = 0; i < image.pixels.length; i += 1) {
            const v = image.pixels[i];
            rgba[4 * i] = v;
            rgba[4 * i + 1] = v;
            rgba[4 * i + 2] = v;
            rgba[4 * i + 3] = 255;
        }
        ctx.putImageData(new ImageData(rgba, image.width, image.height), 0, 0);
    }

    private beginSubmit(): void {
        if (this.inflight !== null) {
            return;
        }
        this.inflight = this.submitCurrent().finally(() => {
            this.inflight = null;
        });
    }

    private async submitCurrent(): Promise<void> {
        const state = this.state as SessionState;
        const imageId = state.currentImage();
        if (imageId === null || !state.canSubmit(imageId)) {
            return;
        }
        const draft = state.draftFor(imageId);
        let ack: Ack;
        try {
            ack = await this.api.postResponse({
                session_id: state.sessionId,
                participant_id: state.participantId,
                image_id: imageId,
                guess: draft.guess as Guess,
                confidence: draft.confidence as number,
                explanation: draft.explanation,
                timestamp: Date.now() / 1000,
            });
        } catch {
            this.retryMessage = 'Could not reach the survey service; '
                + 'your answer is kept locally.';
            this.render();
            return;
        }
        if (!ack.ok) {
            const fields = Object.keys(ack.errors ?? {}).join(', ');
            this.retryMessage = `The service rejected the response (${fields}).`;
            this.render();
            return;
        }
        this.retryMessage = null;
        state.markAnswered(imageId);
        this.render();
    }
}

function el(tag: string, className: string, text?: string): HTMLElement {
    const node = document.createElement(tag);
    if (className) {
        node.className = className;
    }
    if (text !== undefined) {
        node.textContent = text;
    }
    return node;
}
