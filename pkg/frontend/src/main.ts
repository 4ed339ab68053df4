/* Entry point: wires URL parameters to the survey flow.
 *
 * Query parameters:
 *   api=http://127.0.0.1:8765   survey service base URL (default: same origin)
 *   participant=NAME            participant id (default: a start form asks)
 *   seed=N                      session seed (default 0)
 */

import { ApiClient } from './api.js';
import { SurveyApp } from './ui.js';

function startForm(root: HTMLElement, onStart: (participant: string) => void): void {
    root.innerHTML = '';
    const panel = document.createElement('div');
    panel.className = 'panel start';
    const heading = document.createElement('h2');
    heading.textContent = 'Image realism survey';
    panel.appendChild(heading);
    const blurb = document.createElement('p');
    blurb.textContent = 'You will see 30 microscopy images, one at a time. '
        + 'For each, decide whether it is a real capture or a synthetic one.';
    panel.appendChild(blurb);
    const input = document.createElement('input');
    input.id = 'participant';
    input.placeholder = 'participant id';
    panel.appendChild(input);
    const button = document.createElement('button');
    button.id = 'start';
    button.textContent = 'Start';
    button.addEventListener('click', () => {
        if (input.value.trim() !== '') {
            onStart(input.value.trim());
        }
    });
    panel.appendChild(button);
    root.appendChild(panel);
}

export function boot(root: HTMLElement, query: URLSearchParams, storage: Storage): void {
    const api = new ApiClient(query.get('api') ?? '');
    const seed = Number(query.get('seed') ?? '0');
    const app = new SurveyApp(root, api, storage);
    const participant = query.get('participant');
    if (participant !== null && participant.trim() !== '') {
        void app.start(participant.trim(), seed);
    } else {
        startForm(root, (name) => void app.start(name, seed));
    }
}

const rootElement = document.getElementById('app');
if (rootElement !== null) {
    boot(rootElement, new URLSearchParams(window.location.search),
         window.localStorage);
}
