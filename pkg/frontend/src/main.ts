import { Api } from './api.js';
import { BlameView } from './views/blame.js';
import { EditorView } from './views/editor.js';
import { PlayingView } from './views/playing.js';

const api = new Api('');

const tabs: Record<string, { mount(): Promise<void> }> = {};

function activate(name: string): void {
  document.querySelectorAll('.tab-button').forEach((button) => {
    button.classList.toggle('active', (button as HTMLElement).dataset.tab === name);
  });
  const outlet = document.querySelector<HTMLDivElement>('#outlet');
  if (!outlet) throw new Error('missing #outlet');
  void tabs[name].mount();
}

function bootstrap(): void {
  const outlet = document.querySelector<HTMLDivElement>('#outlet');
  if (!outlet) throw new Error('missing #outlet');
  tabs.editor = new EditorView(outlet, api);
  tabs.playing = new PlayingView(outlet, api);
  tabs.blame = new BlameView(outlet, api);
  document.querySelectorAll('.tab-button').forEach((button) => {
    button.addEventListener('click', () => {
      activate((button as HTMLElement).dataset.tab ?? 'editor');
    });
  });
  activate('editor');
}

bootstrap();
